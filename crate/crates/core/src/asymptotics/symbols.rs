//! Second-order differential operators with polynomial coefficients, and the
//! first two perturbation symbols of the rescaled operator
//! `Delta^eps = Delta_hat + eps A_1 + eps^2 A_2 + ...`.
//!
//! With `Y_i^eps = eps delta_eps^* X_i = X_hat_i + eps Y_i^(0) + eps^2 Y_i^(1) + ...`
//! (the graded parts of degree `-1, 0, 1`) and the drift split the same way,
//! expanding `sum (Y_i^eps)^2 + eps^k Y_0^eps - eps^2 V o delta_eps` gives
//! `A_1 = sum (X_hat_i Y_i^(0) + Y_i^(0) X_hat_i) + (drift part of degree -1)`
//! and
//! `A_2 = sum (X_hat_i Y_i^(1) + Y_i^(1) X_hat_i + Y_i^(0) Y_i^(0)) + (drift part of degree 0) - V(q)`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{graded_parts, PolyVectorField, Weights};
use crate::grid::Grid;
use crate::poly::{CompiledPoly, MultiPoly, Rational};

/// `sum_{j<=k} a_jk d_j d_k + sum_j b_j d_j + c`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffOperator {
    pub dim: usize,
    /// Keyed by `(j, k)` with `j <= k`; serialized as `[j, k, a_jk]` triples.
    #[serde(serialize_with = "second_as_triples")]
    pub second: BTreeMap<(usize, usize), MultiPoly>,
    pub first: Vec<MultiPoly>,
    pub zeroth: MultiPoly,
}

fn second_as_triples<S: serde::Serializer>(m: &BTreeMap<(usize, usize), MultiPoly>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(m.iter().map(|(&(j, k), a)| (j, k, a)))
}

impl DiffOperator {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            second: BTreeMap::new(),
            first: vec![MultiPoly::zero(dim); dim],
            zeroth: MultiPoly::zero(dim),
        }
    }

    pub fn multiplication(p: MultiPoly) -> Self {
        let mut op = Self::zero(p.dim());
        op.zeroth = p;
        op
    }

    pub fn from_field(x: &PolyVectorField) -> Self {
        let mut op = Self::zero(x.dim());
        op.first = x.components().to_vec();
        op
    }

    /// The composition `X Y` of two vector fields.
    pub fn compose_fields(x: &PolyVectorField, y: &PolyVectorField) -> Result<Self> {
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                found: y.dim(),
            });
        }
        let n = x.dim();
        let mut op = Self::zero(n);
        for j in 0..n {
            for k in 0..n {
                let c = x.component(j) * y.component(k);
                if !c.is_zero() {
                    op.add_second(j, k, &c);
                }
            }
        }
        for k in 0..n {
            op.first[k] = x.apply(y.component(k));
        }
        Ok(op)
    }

    fn add_second(&mut self, j: usize, k: usize, c: &MultiPoly) {
        let key = (j.min(k), j.max(k));
        let entry = self.second.entry(key).or_insert_with(|| MultiPoly::zero(c.dim()));
        *entry = &*entry + c;
        if entry.is_zero() {
            self.second.remove(&key);
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut out = self.clone();
        for (&(j, k), c) in &other.second {
            out.add_second(j, k, c);
        }
        for (a, b) in out.first.iter_mut().zip(&other.first) {
            *a = &*a + b;
        }
        out.zeroth = &out.zeroth + &other.zeroth;
        Ok(out)
    }

    pub fn scale(&self, s: &Rational) -> Self {
        let mut out = Self::zero(self.dim);
        for (&(j, k), c) in &self.second {
            out.add_second(j, k, &c.scale(s));
        }
        out.first = self.first.iter().map(|p| p.scale(s)).collect();
        out.zeroth = self.zeroth.scale(s);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.second.is_empty() && self.first.iter().all(MultiPoly::is_zero) && self.zeroth.is_zero()
    }

    /// Exact action on a polynomial.
    pub fn apply(&self, f: &MultiPoly) -> MultiPoly {
        let mut out = &self.zeroth * f;
        for (j, b) in self.first.iter().enumerate() {
            if !b.is_zero() {
                out = &out + &(b * &f.derivative(j));
            }
        }
        for (&(j, k), a) in &self.second {
            out = &out + &(a * &f.derivative(j).derivative(k));
        }
        out
    }

    /// Largest ordinary degree among the coefficients; `None` for zero.
    pub fn max_coefficient_degree(&self) -> Option<i64> {
        self.second
            .values()
            .chain(&self.first)
            .chain(std::iter::once(&self.zeroth))
            .filter_map(MultiPoly::total_degree)
            .max()
    }

    /// The formal adjoint in Lebesgue measure,
    /// `f -> sum d_j d_k (a_jk f) - sum d_j (b_j f) + c f`.
    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zero(n);
        let mut zeroth = self.zeroth.clone();
        let mut first: Vec<MultiPoly> = self.first.iter().map(|b| -b).collect();
        for (j, b) in self.first.iter().enumerate() {
            zeroth = &zeroth - &b.derivative(j);
        }
        for (&(j, k), a) in &self.second {
            out.add_second(j, k, a);
            // d_j d_k (a f) = a f_jk + a_j f_k + a_k f_j + a_jk f
            first[k] = &first[k] + &a.derivative(j);
            first[j] = &first[j] + &a.derivative(k);
            zeroth = &zeroth + &a.derivative(j).derivative(k);
        }
        out.first = first;
        out.zeroth = zeroth;
        out
    }

    pub fn compile(&self) -> CompiledDiffOperator {
        CompiledDiffOperator {
            dim: self.dim,
            second: self.second.iter().map(|(&k, p)| (k, p.compile())).collect(),
            first: self
                .first
                .iter()
                .enumerate()
                .filter(|(_, p)| !p.is_zero())
                .map(|(j, p)| (j, p.compile()))
                .collect(),
            zeroth: (!self.zeroth.is_zero()).then(|| self.zeroth.compile()),
        }
    }
}

/// Float form of a [`DiffOperator`] acting on grid functions by centered
/// differences.
#[derive(Clone, Debug)]
pub struct CompiledDiffOperator {
    dim: usize,
    second: Vec<((usize, usize), CompiledPoly)>,
    first: Vec<(usize, CompiledPoly)>,
    zeroth: Option<CompiledPoly>,
}

impl CompiledDiffOperator {
    /// Applies the operator to nodal values on `grid`. Nodes on the grid
    /// boundary get zero, matching homogeneous Dirichlet data.
    pub fn apply_grid(&self, grid: &Grid, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(grid.dim(), self.dim);
        let h = &grid.spacing;
        let stride = grid.strides();
        for (p, o) in out.iter_mut().enumerate() {
            if !grid.is_interior(p, 1) {
                *o = 0.0;
                continue;
            }
            let x = grid.node_coord(p);
            let mut acc = self.zeroth.as_ref().map_or(0.0, |c| c.eval(&x) * u[p]);
            for (j, b) in &self.first {
                let s = stride[*j];
                acc += b.eval(&x) * (u[p + s] - u[p - s]) / (2.0 * h[*j]);
            }
            for ((j, k), a) in &self.second {
                let d = if j == k {
                    let s = stride[*j];
                    (u[p + s] - 2.0 * u[p] + u[p - s]) / (h[*j] * h[*j])
                } else {
                    let (sj, sk) = (stride[*j], stride[*k]);
                    (u[p + sj + sk] - u[p + sj - sk] - u[p - sj + sk] + u[p - sj - sk]) / (4.0 * h[*j] * h[*k])
                };
                acc += a.eval(&x) * d;
            }
            *o = acc;
        }
    }
}

/// Graded ingredients of the symbols in chart coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolInputs {
    pub weights: Weights,
    pub hats: Vec<PolyVectorField>,
    pub y0: Vec<PolyVectorField>,
    pub y1: Vec<PolyVectorField>,
    pub drift_minus1: PolyVectorField,
    pub drift0: PolyVectorField,
    /// `V(q)`, the potential at the base point.
    pub v0: Rational,
}

impl SymbolInputs {
    /// Splits chart-coordinate fields, drift and potential into the parts
    /// the first two symbols need.
    pub fn from_fields(
        fields: &[PolyVectorField],
        drift: Option<&PolyVectorField>,
        potential: Option<&MultiPoly>,
        w: &Weights,
    ) -> Result<Self> {
        let n = w.len();
        if fields.iter().chain(drift).any(|x| x.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: fields.first().map_or(n, PolyVectorField::dim),
            });
        }
        let part = |x: &PolyVectorField, k: i64| {
            graded_parts(x, w, k, k)
                .remove(&k)
                .unwrap_or_else(|| PolyVectorField::zero(n))
        };
        let zero = PolyVectorField::zero(n);
        let drift = drift.unwrap_or(&zero);
        Ok(Self {
            weights: w.clone(),
            hats: fields.iter().map(|x| part(x, -1)).collect(),
            y0: fields.iter().map(|x| part(x, 0)).collect(),
            y1: fields.iter().map(|x| part(x, 1)).collect(),
            drift_minus1: part(drift, -1),
            drift0: part(drift, 0),
            v0: potential.map_or_else(Rational::default, MultiPoly::constant_term),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationSymbols {
    pub a1: DiffOperator,
    pub a2: DiffOperator,
    /// `(r + i)^2` for `i = 1, 2`.
    pub degree_bounds: [i64; 2],
    pub degrees: [Option<i64>; 2],
    /// Every coefficient degree is strictly below its bound.
    pub within_bounds: bool,
}

/// `A_1` and `A_2` at a base point of step `r`.
pub fn perturbation_symbols(inp: &SymbolInputs, r: u32) -> Result<PerturbationSymbols> {
    let n = inp.weights.len();
    let mut a1 = DiffOperator::from_field(&inp.drift_minus1);
    let mut a2 = DiffOperator::from_field(&inp.drift0);
    a2 = a2.add(&DiffOperator::multiplication(MultiPoly::constant(n, -inp.v0.clone())))?;
    for ((xh, y0), y1) in inp.hats.iter().zip(&inp.y0).zip(&inp.y1) {
        a1 = a1
            .add(&DiffOperator::compose_fields(xh, y0)?)?
            .add(&DiffOperator::compose_fields(y0, xh)?)?;
        a2 = a2
            .add(&DiffOperator::compose_fields(xh, y1)?)?
            .add(&DiffOperator::compose_fields(y1, xh)?)?
            .add(&DiffOperator::compose_fields(y0, y0)?)?;
    }
    let r = r as i64;
    let degree_bounds = [(r + 1).pow(2), (r + 2).pow(2)];
    let degrees = [a1.max_coefficient_degree(), a2.max_coefficient_degree()];
    let within_bounds = degrees.iter().zip(&degree_bounds).all(|(d, b)| d.is_none_or(|d| d < *b));
    Ok(PerturbationSymbols {
        a1,
        a2,
        degree_bounds,
        degrees,
        within_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{int, rat};
    use proptest::prelude::*;

    fn x(n: usize, i: usize) -> MultiPoly {
        MultiPoly::var(n, i)
    }

    fn grushin_pert() -> Vec<PolyVectorField> {
        // X1 = d1, X2 = (x1 + x1^2) d2
        let f = &x(2, 0) + &x(2, 0).pow(2);
        vec![PolyVectorField::coordinate(2, 0), PolyVectorField::along(1, f)]
    }

    #[test]
    fn grushin_first_symbol() {
        let w = Weights::new(vec![1, 2]).unwrap();
        let inp = SymbolInputs::from_fields(&grushin_pert(), None, None, &w).unwrap();
        let s = perturbation_symbols(&inp, 2).unwrap();
        // A1 = 2 x1^3 d2^2
        let mut expect = DiffOperator::zero(2);
        expect.second.insert((1, 1), x(2, 0).pow(3).scale(&int(2)));
        assert_eq!(s.a1, expect);
        // A2 = x1^4 d2^2
        let mut expect2 = DiffOperator::zero(2);
        expect2.second.insert((1, 1), x(2, 0).pow(4));
        assert_eq!(s.a2, expect2);
        assert_eq!(s.degree_bounds, [9, 16]);
        assert!(s.within_bounds);
    }

    #[test]
    fn symbols_match_the_expanded_operator() {
        // the eps^1 and eps^2 coefficients of sum (eps delta^* X_i)^2 applied
        // to a test polynomial, computed by dilating with symbolic eps = 1/k
        let w = Weights::new(vec![1, 2]).unwrap();
        let fields = grushin_pert();
        let inp = SymbolInputs::from_fields(&fields, None, None, &w).unwrap();
        let s = perturbation_symbols(&inp, 2).unwrap();
        let g = &(&x(2, 1).pow(2) * &x(2, 0)) + &x(2, 1);
        let full = |eps: &Rational| {
            let ys: Vec<PolyVectorField> = fields
                .iter()
                .map(|f| crate::field::dilate_pullback(f, &w, eps, 1).unwrap())
                .collect();
            ys.iter().fold(MultiPoly::zero(2), |acc, y| &acc + &y.apply(&y.apply(&g)))
        };
        let hat: Vec<_> = inp.hats.clone();
        let lap_hat = hat.iter().fold(MultiPoly::zero(2), |acc, y| &acc + &y.apply(&y.apply(&g)));
        // the expansion is a polynomial of degree 2 in eps here; match at eps = 1, 2
        for e in [int(1), int(2), rat(1, 3)] {
            let predicted = &(&lap_hat + &s.a1.apply(&g).scale(&e)) + &s.a2.apply(&g).scale(&(&e * &e));
            assert_eq!(full(&e), predicted);
        }
    }

    #[test]
    fn unit_symbol_acts_as_identity() {
        let op = DiffOperator::multiplication(MultiPoly::one(2));
        let g = &x(2, 0) + &x(2, 1).pow(3);
        assert_eq!(op.apply(&g), g);
    }

    #[test]
    fn adjoint_of_a_field_is_minus_field_minus_divergence() {
        let f = PolyVectorField::along(1, &x(2, 0) * &x(2, 1));
        let op = DiffOperator::from_field(&f);
        let adj = op.adjoint();
        assert_eq!(adj.first[1], -&(&x(2, 0) * &x(2, 1)));
        assert_eq!(adj.zeroth, -&x(2, 0));
        assert_eq!(adj.adjoint(), op);
    }

    #[test]
    fn grid_application_is_exact_on_quadratics() {
        let grid = Grid::from_box(&[-1.0, -1.0], &[1.0, 1.0], &[0.25, 0.25]).unwrap();
        let mut op = DiffOperator::zero(2);
        op.second.insert((0, 1), x(2, 0));
        op.second.insert((1, 1), MultiPoly::one(2).scale(&int(3)));
        op.first[0] = x(2, 1);
        op.zeroth = MultiPoly::one(2);
        let g = &(&x(2, 0) * &x(2, 1)) + &x(2, 1).pow(2);
        let exact = op.apply(&g);
        let u: Vec<f64> = (0..grid.len()).map(|p| g.eval_f64(&grid.node_coord(p))).collect();
        let mut out = vec![0.0; grid.len()];
        op.compile().apply_grid(&grid, &u, &mut out);
        for p in 0..grid.len() {
            if grid.is_interior(p, 1) {
                assert!((out[p] - exact.eval_f64(&grid.node_coord(p))).abs() < 1e-12);
            } else {
                assert_eq!(out[p], 0.0);
            }
        }
    }

    #[test]
    fn serializes_to_json() {
        let mut op = DiffOperator::zero(2);
        op.second.insert((0, 1), x(2, 0));
        let v = serde_json::to_value(&op).unwrap();
        assert_eq!(v["second"][0][0], 0);
        assert_eq!(v["second"][0][1], 1);
        assert_eq!(v["second"][0][2], serde_json::to_value(x(2, 0)).unwrap());
    }

    proptest! {
        #[test]
        fn adjoint_is_an_involution(a in -3i64..4, b in -3i64..4, c in -3i64..4) {
            let mut op = DiffOperator::zero(2);
            op.second.insert((0, 1), &x(2, 0).scale(&int(a)) + &MultiPoly::one(2));
            op.second.insert((0, 0), &x(2, 1).pow(2).scale(&int(b)) + &MultiPoly::one(2));
            op.first[1] = x(2, 0).pow(2).scale(&int(c));
            op.zeroth = x(2, 1);
            prop_assert_eq!(op.adjoint().adjoint(), op);
        }
    }
}
